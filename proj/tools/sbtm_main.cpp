#include "sbtm/cli.hpp"

int main(int argc, char** argv) { return sbtm::run_main(argc, argv); }
