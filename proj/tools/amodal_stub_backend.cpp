#include <iostream>

#include "amodal/engine/protocol.hpp"

// Usage: amodal_stub_backend <request_dir>
int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: " << argv[0] << " <request_dir>\n";
    return 2;
  }
  return amodal::protocol::serve_reference(argv[1]);
}
