#include "cli_app.hpp"

int main(int argc, char** argv) { return mmfw::cli::run_cli(argc, argv); }
