#include "padain/cli.hpp"

int main(int argc, char** argv) { return padain::cli::run(argc, argv); }
