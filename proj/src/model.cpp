#include "otdistill/model.hpp"

#include <cmath>

#include "otdistill/errors.hpp"

namespace otdistill {

std::string to_string(Method m) {
  switch (m) {
    case Method::infonce: return "infonce";
    case Method::ls: return "ls";
    case Method::kd: return "kd";
    case Method::otter: return "otter";
  }
  throw MethodUnknown("<invalid enum>");
}

Method method_from_string(const std::string& name) {
  if (name == "infonce") return Method::infonce;
  if (name == "ls") return Method::ls;
  if (name == "kd") return Method::kd;
  if (name == "otter") return Method::otter;
  throw MethodUnknown(name);
}

double EncoderState::inv_temp() const { return std::exp(log_inv_temp); }

EmbeddingBatch encode_rows(const Matrix& features, const Matrix& weights) {
  return l2_normalize_rows(matmul(features, weights));
}

}  // namespace otdistill
