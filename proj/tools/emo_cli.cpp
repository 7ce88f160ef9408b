#include <iostream>

#include "emo/cli.hpp"

int main(int argc, char** argv) { return emo::cli::dispatch(argc, argv, std::cout, std::cerr); }
