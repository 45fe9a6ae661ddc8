#include "scdm/errors.hpp"
#include "scdm/io.hpp"
#include "scdm/nn/mlp.hpp"

namespace scdm::nn {

io::Json mlp_to_json(const Mlp& net) {
  io::Json layers = io::Json::array();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Eigen::VectorXd b = net.bias(l).transpose();
    layers.push_back({{"W", io::matrix_to_json(net.weight(l))}, {"b", io::vector_to_json(b)}});
  }
  return {{"layer_dims", net.layer_dims()}, {"activation", to_string(net.activation())}, {"weights", layers}};
}

Mlp mlp_from_json(const io::Json& j) {
  Mlp net(j.at("layer_dims").get<std::vector<std::size_t>>(),
          activation_from_string(j.value("activation", std::string("silu"))));
  const io::Json& layers = j.at("weights");
  if (layers.size() != net.layer_count()) throw IoError("mlp: layer count mismatch");
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix w = io::matrix_from_json(layers.at(l).at("W"));
    const Eigen::VectorXd b = io::vector_from_json(layers.at(l).at("b"));
    if (w.rows() != net.weight(l).rows() || w.cols() != net.weight(l).cols() || b.size() != net.bias(l).size()) {
      throw IoError("mlp: layer " + std::to_string(l) + " shape mismatch");
    }
    net.weight(l) = w;
    net.bias(l) = b.transpose();
  }
  return net;
}

}  // namespace scdm::nn
