#include "stochunfold/harness.hpp"

int main(int argc, char** argv) { return stochunfold::run_cli(argc, argv); }
