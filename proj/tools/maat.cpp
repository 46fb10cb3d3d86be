#include "maat/cli.hpp"

int main(int argc, char** argv) { return maat::cli::run(argc, argv); }
