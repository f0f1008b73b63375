#include <edgestep/cli.hpp>

int main(int argc, char** argv) { return edgestep::cli::run_cli(argc, argv); }
