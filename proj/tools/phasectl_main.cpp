#include "phasectl/cli.hpp"

int main(int argc, char** argv) { return phasectl::run_cli(argc, argv); }
