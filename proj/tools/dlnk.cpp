#include "dlnk/cli.hpp"

int main(int argc, char** argv) { return dlnk::cli::run(argc, argv); }
