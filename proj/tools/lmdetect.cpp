#include "lmd/cli.hpp"

int main(int argc, char** argv) { return lmd::dispatch(argc, argv); }
