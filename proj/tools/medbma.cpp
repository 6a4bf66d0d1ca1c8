#include "medbma/cli.hpp"

int main(int argc, char** argv) { return medbma::cli::run(argc, argv); }
