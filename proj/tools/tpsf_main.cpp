#include <iostream>

#include <tpsf/cli/cli.hpp>
#include <tpsf/core/parallel.hpp>

int main(int argc, char **argv) {
  tpsf::retain_freed_memory();
  return tpsf::cli::run(argc, argv, std::cout, std::cerr);
}
