#include "epistitch/cli.hpp"

int main(int argc, char** argv) { return epistitch::runCli(argc, argv); }
