#include "otdistill/cli.hpp"

int main(int argc, char** argv) { return otdistill::cli::run(argc, argv); }
