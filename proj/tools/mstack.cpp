#include "mstack/cli.hpp"

int main(int argc, char** argv) { return mstack::run_cli(argc, argv); }
