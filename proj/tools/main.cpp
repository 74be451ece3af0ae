#include "cipherbreak/cli.hpp"

int main(int argc, char** argv) { return cipherbreak::cli::run(argc, argv); }
