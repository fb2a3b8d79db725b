#include "apt/runner.hpp"

int main(int argc, char** argv) { return apt::run_cli(argc, argv); }
