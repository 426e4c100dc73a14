#include <algorithm>

#include "aerosdf/training.hpp"

namespace aerosdf::training {

Tensor<float> to_network(const sdf::Volume& volume) {
  const auto& d = volume.grid.dims;
  const std::size_t c = volume.components;
  if (volume.values.size() != volume.grid.cell_count() * c) throw Error("volume value count does not match its grid");
  Tensor<float> t({c, d[0], d[1], d[2]});
  std::size_t out = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < d[0]; ++i) {
      for (std::size_t j = 0; j < d[1]; ++j) {
        for (std::size_t k = 0; k < d[2]; ++k) t[out++] = static_cast<float>(volume.at(i, j, k, ch));
      }
    }
  }
  return t;
}

sdf::Volume from_network(const Tensor<float>& tensor, const sdf::GridSpec& grid) {
  const auto& d = grid.dims;
  if (tensor.rank() != 4 || tensor.dim(1) != d[0] || tensor.dim(2) != d[1] || tensor.dim(3) != d[2]) {
    throw ShapeError("tensor " + ad::shape_string(tensor.shape()) + " does not match grid " + std::to_string(d[0]) +
                     "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]));
  }
  sdf::Volume v;
  v.grid = grid;
  v.components = static_cast<std::uint32_t>(tensor.dim(0));
  v.values.resize(tensor.size());
  std::size_t in = 0;
  for (std::size_t ch = 0; ch < v.components; ++ch) {
    for (std::size_t i = 0; i < d[0]; ++i) {
      for (std::size_t j = 0; j < d[1]; ++j) {
        for (std::size_t k = 0; k < d[2]; ++k) v.at(i, j, k, ch) = tensor[in++];
      }
    }
  }
  return v;
}

namespace {

Tensor<float> stack(const std::vector<Sample>& samples, std::span<const std::size_t> indices,
                    const Tensor<float> Sample::*member, const char* what) {
  if (indices.empty()) throw Error(std::string("cannot stack an empty batch of ") + what);
  const Tensor<float>& first = samples.at(indices[0]).*member;
  if (first.empty()) throw Error("sample '" + samples[indices[0]].id + "' has no " + what);
  Shape shape{indices.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor<float> out(shape);
  const std::size_t per = first.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor<float>& t = samples.at(indices[b]).*member;
    if (t.shape() != first.shape()) {
      throw ShapeError("sample '" + samples[indices[b]].id + "' " + what + " shape " + ad::shape_string(t.shape()) +
                       " differs from " + ad::shape_string(first.shape()));
    }
    std::copy_n(t.data(), per, out.data() + b * per);
  }
  return out;
}

}  // namespace

Tensor<float> stack_inputs(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  return stack(samples, indices, &Sample::input, "input");
}

Tensor<float> stack_fields(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  return stack(samples, indices, &Sample::fields, "field target");
}

std::vector<double> predict_cd(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                               std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<std::size_t> batch;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    batch.clear();
    for (std::size_t i = begin; i < std::min(samples.size(), begin + batch_size); ++i) batch.push_back(i);
    const auto cd = model.predict_cd(stack_inputs(samples, batch));
    out.insert(out.end(), cd.begin(), cd.end());
  }
  return out;
}

}  // namespace aerosdf::training
