#include "fpnn/app/cli.hpp"

int main(int argc, char** argv) { return fpnn::app::run_cli(argc, argv); }
