#include "kmf/cli.hpp"

int main(int argc, char** argv) { return kmf::run_command(argc, argv); }
