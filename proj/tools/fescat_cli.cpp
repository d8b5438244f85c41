#include "fescat/cli.hpp"

int main(int argc, char** argv) { return fescat::run_cli(argc, argv); }
