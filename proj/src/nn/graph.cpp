#include "mash/nn/graph.hpp"

namespace mash::nn {

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::parameter:
      return "parameter";
    case OpKind::constant:
      return "constant";
    case OpKind::matmul:
      return "matmul";
    case OpKind::concat:
      return "concat";
    case OpKind::add:
      return "add";
    case OpKind::embedding:
      return "embedding";
    case OpKind::softmax:
      return "softmax";
    case OpKind::log:
      return "log";
    case OpKind::sigmoid:
      return "sigmoid";
    case OpKind::cross_entropy:
      return "cross_entropy";
    case OpKind::sum:
      return "sum";
    case OpKind::scale:
      return "scale";
  }
  return "unknown";
}

}  // namespace mash::nn
