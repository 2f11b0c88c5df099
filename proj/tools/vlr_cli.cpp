#include "vlr/cli.hpp"

int main(int argc, char** argv) { return vlr::dispatch(argc, argv); }
