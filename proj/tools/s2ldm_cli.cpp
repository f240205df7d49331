#include "s2ldm/pipeline.hpp"

int main(int argc, char** argv) {
    return s2ldm::run_cli(argc, argv);
}
