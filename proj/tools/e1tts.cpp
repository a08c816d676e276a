#include "e1/cli/app.hpp"

int main(int argc, char** argv) { return e1::cli::run(argc, argv); }
