#include "metauad/cli.hpp"

int main(int argc, char** argv) { return metauad::dispatch(argc, argv); }
