#include "commands.hpp"

int main(int argc, char** argv) { return vmclass::cli::run(argc, argv); }
