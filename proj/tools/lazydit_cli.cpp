#include "lazydit/cli.hpp"

int main(int argc, char** argv) { return lazydit::run_cli(argc, argv); }
