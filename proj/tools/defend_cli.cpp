#include <iostream>

#include "defend/app/commands.hpp"

int main(int argc, char** argv) { return defend::app::run_cli(argc, argv, std::cout, std::cerr); }
