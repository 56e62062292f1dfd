#include "amodal/cli/commands.hpp"

int main(int argc, char** argv) { return amodal::cli::run(argc, argv); }
