#pragma once

#include "dsg/autodiff.hpp"
#include "dsg/rng.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dsg {

// A persistent trainable tensor with its gradient and momentum buffers.
struct ParamTensor {
  std::string name;
  Shape shape;
  Array value;
  Array grad;
  Array velocity;

  long size() const { return value.size(); }
};

// Ordered, named registry of parameters. The order of creation defines the
// checkpoint layout and the (deterministic) optimizer update order.
class ParamStore {
 public:
  // Zero-initialized tensor (biases).
  ParamTensor& create(const std::string& name, Shape shape);

  // Uniform init in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]
  // for rank-2 [in, out] tensors.
  ParamTensor& create_uniform(const std::string& name, Shape shape, Rng& rng);

  ParamTensor* find(const std::string& name);
  const ParamTensor* find(const std::string& name) const;

  void zero_grads();
  std::size_t count() const { return items_.size(); }
  ParamTensor& at(std::size_t i) { return *items_[i]; }
  const ParamTensor& at(std::size_t i) const { return *items_[i]; }

 private:
  std::vector<std::unique_ptr<ParamTensor>> items_;
};

// v <- momentum * v + g;  p <- p - lr * v
void sgd_step(ParamTensor& p, double lr, double momentum);
void sgd_step(ParamStore& store, double lr, double momentum);

// Versioned binary checkpoint: magic "DSG1", then per-tensor
// name / shape / float64 little-endian payload. Round-trips bitwise.
void save_params(const ParamStore& store, const std::string& path);
// Requires an already-built store with matching names and shapes; a mismatch
// throws naming the offending tensor.
void load_params(ParamStore& store, const std::string& path);

enum class Activation { kReLU, kIdentity };

struct MlpLayer {
  ParamTensor* weight = nullptr;  // [in, out]
  ParamTensor* bias = nullptr;    // [out]
  Activation act = Activation::kIdentity;
};

// Fully-connected stack; hidden layers ReLU, final layer identity.
struct MlpParams {
  std::vector<MlpLayer> layers;
  int input_width() const { return layers.front().weight->shape[0]; }
  int output_width() const { return layers.back().weight->shape[1]; }
};

MlpParams make_mlp(ParamStore& store, const std::string& prefix,
                   const std::vector<int>& widths, Rng& rng);

// x: [n, in] -> [n, out]
Tensor mlp_forward(Graph& g, const MlpParams& mlp, Tensor x);

}  // namespace dsg
