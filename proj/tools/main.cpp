#include "advimmune/harness.hpp"

int main(int argc, char** argv) { return advimmune::run_cli(argc, argv); }
