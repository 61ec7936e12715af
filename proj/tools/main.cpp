#include "percept_loop/cli/app.hpp"

int main(int argc, char** argv) { return percept_loop::cli::run(argc, argv); }
