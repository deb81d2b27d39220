// Python face of the gating operator: forward/backward on numpy arrays,
// the closed-form cost counters, and the binary tensor container. All math
// runs on the 64-bit path; tensor files stay float32 as the format demands.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sge/errors.hpp"
#include "sge/io_formats.hpp"
#include "sge/sge_op.hpp"
#include "sge/tensor.hpp"

namespace py = pybind11;

namespace {

using CArray =
    py::array_t<double, py::array::c_style | py::array::forcecast>;

sge::Tensor4<double> tensor_from_array(const CArray& a, const char* name) {
  if (a.ndim() != 4) {
    throw sge::InvalidArgument(std::string(name) +
                               " must have shape (batch, channels, height, "
                               "width); got ndim " +
                               std::to_string(a.ndim()));
  }
  const sge::Shape4 shape{
      static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
      static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3))};
  std::vector<double> data(a.data(), a.data() + a.size());
  return sge::Tensor4<double>(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const sge::Tensor4<double>& t) {
  const sge::Shape4& s = t.shape();
  py::array_t<double> out({s.n, s.c, s.h, s.w});
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

// note: array_t{count} alone builds a stride-0 view here, so hand the
// data pointer to the constructor and let it copy
py::array_t<double> array_from_vector(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

py::array_t<double> array_from_cells(const std::vector<double>& v, int n,
                                     int groups, int h, int w) {
  // (N, G, m) cell storage viewed spatially.
  py::array_t<double> out({n, groups, h, w});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

sge::SgeParams<double> make_params(const std::vector<double>& gamma,
                                   const std::vector<double>& beta,
                                   double epsilon, bool normalize) {
  sge::SgeParams<double> p;
  p.groups = static_cast<int>(gamma.size());
  p.gamma = gamma;
  p.beta = beta;
  p.epsilon = epsilon;
  p.normalize = normalize;
  return p;
}

py::object forward(const CArray& x, const std::vector<double>& gamma,
                   const std::vector<double>& beta, double epsilon,
                   bool normalize, bool return_intermediates) {
  const auto t = tensor_from_array(x, "x");
  const auto params = make_params(gamma, beta, epsilon, normalize);
  const auto [y, cache] = sge::sge_forward(t, params);
  auto out = array_from_tensor(y);
  if (!return_intermediates) return out;

  const sge::Shape4& s = t.shape();
  py::dict inter;
  inter["gate"] = array_from_cells(cache.gate, s.n, params.groups, s.h, s.w);
  inter["standardized"] =
      array_from_cells(cache.c_hat, s.n, params.groups, s.h, s.w);
  inter["similarity"] =
      array_from_cells(cache.c, s.n, params.groups, s.h, s.w);
  py::array_t<double> mu({s.n, params.groups});
  std::copy(cache.mu_c.begin(), cache.mu_c.end(), mu.mutable_data());
  inter["mu"] = mu;
  py::array_t<double> sigma({s.n, params.groups});
  std::copy(cache.sigma_c.begin(), cache.sigma_c.end(),
            sigma.mutable_data());
  inter["sigma"] = sigma;
  return py::make_tuple(out, inter);
}

py::tuple backward(const CArray& x, const std::vector<double>& gamma,
                   const std::vector<double>& beta, const CArray& d_output,
                   double epsilon, bool normalize) {
  const auto t = tensor_from_array(x, "x");
  const auto d_out = tensor_from_array(d_output, "d_output");
  const auto params = make_params(gamma, beta, epsilon, normalize);
  const auto [y, cache] = sge::sge_forward(t, params);
  (void)y;
  const auto grads = sge::sge_backward(cache, d_out, params);
  return py::make_tuple(array_from_tensor(grads.d_input),
                        array_from_vector(grads.d_gamma),
                        array_from_vector(grads.d_beta));
}

py::array_t<float> read_tensor(const std::string& path) {
  const sge::TensorData t = sge::read_tensor_file(path);
  std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
  py::array_t<float> out(shape);
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return out;
}

void write_tensor(const std::string& path,
                  const py::array_t<float, py::array::c_style |
                                               py::array::forcecast>& a) {
  sge::TensorData t;
  for (py::ssize_t d = 0; d < a.ndim(); ++d) {
    t.dims.push_back(static_cast<std::uint32_t>(a.shape(d)));
  }
  t.values.assign(a.data(), a.data() + a.size());
  sge::write_tensor_file(path, t);
}

}  // namespace

PYBIND11_MODULE(_sgelab, m) {
  m.doc() =
      "Spatial group-wise gating: per-group similarity attention over "
      "feature maps, with analytic gradients and the binary tensor "
      "container used by the command line tools.";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const sge::IndexOutOfRange& e) {
      PyErr_SetString(PyExc_IndexError, e.what());
    } catch (const sge::InvalidArgument& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const sge::IndivisibleChannels& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const sge::ShapeMismatch& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const sge::Error& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  m.def("forward", &forward, py::arg("x"), py::arg("gamma"), py::arg("beta"),
        py::kw_only(), py::arg("epsilon") = sge::kDefaultEpsilon,
        py::arg("normalize") = true, py::arg("return_intermediates") = false,
        "Gate a feature map of shape (batch, channels, height, width).\n"
        "gamma and beta have one entry per group; channels must divide "
        "evenly into len(gamma) groups. Returns the gated map, or with\n"
        "return_intermediates=True a (output, dict) pair carrying the\n"
        "gate, standardized and raw similarities, and spatial moments.");

  m.def("backward", &backward, py::arg("x"), py::arg("gamma"),
        py::arg("beta"), py::arg("d_output"), py::kw_only(),
        py::arg("epsilon") = sge::kDefaultEpsilon,
        py::arg("normalize") = true,
        "Gradients of sum(d_output * forward(x)) with respect to x, gamma "
        "and beta.\nReturns (d_x, d_gamma, d_beta).");

  m.def("count_params", &sge::count_params, py::arg("channels"),
        py::arg("groups"),
        "Trainable parameter count of one operator instance: exactly 2G.");

  m.def("count_flops", &sge::count_flops, py::arg("batch"),
        py::arg("channels"), py::arg("height"), py::arg("width"),
        py::arg("groups"),
        "Closed-form multiply-add count of one forward pass: "
        "N*H*W*(3C + 5G).");

  m.def("read_tensor", &read_tensor, py::arg("path"),
        "Load a binary tensor file as a float32 array.");

  m.def("write_tensor", &write_tensor, py::arg("path"), py::arg("array"),
        "Store a float array (rank 1..8) as a binary tensor file.");

  m.attr("DEFAULT_EPSILON") = sge::kDefaultEpsilon;
}
