#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace alignlab {

using Vec = Eigen::VectorXd;
/// Row k is sample x_k; rows are contiguous.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Column-major m x d: column j holds coordinate j of every neuron contiguously.
using NeuronMat = Eigen::MatrixXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or dimensions disagree between inputs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A spec, config or file failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A requested closed form or exact mode does not exist for the inputs.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Training or experiment failure (divergence, non-finite values).
class RunError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or record could not be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace alignlab
