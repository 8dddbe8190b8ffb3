#include "mafn/cli.hpp"

int main(int argc, char** argv) { return mafn::run_cli(argc, argv); }
