#include "qgen/cli.hpp"

int main(int argc, char** argv) {
    return qgen::cli::dispatch({argv + 1, argv + argc});
}
