#include <boltz/cli.hpp>

int main(int argc, char** argv) { return boltz::run_cli(argc, argv); }
