#ifndef SGE_ERRORS_HPP_
#define SGE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sge {

/// Base class of every exception thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

/// Channel count is not divisible by the requested group count.
class IndivisibleChannels : public Error {
 public:
  IndivisibleChannels(int channels, int groups)
      : Error("channels (" + std::to_string(channels) +
              ") not divisible by groups (" + std::to_string(groups) + ")"),
        channels_(channels),
        groups_(groups) {}

  int channels() const { return channels_; }
  int groups() const { return groups_; }

 private:
  int channels_;
  int groups_;
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Forward cache does not belong to the tensors/params handed to backward.
class StaleCache : public Error {
 public:
  using Error::Error;
};

/// Consecutive layers have incompatible shapes at model build time.
class ShapeIncompatible : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite; carries the offending step index.
class DivergedLoss : public Error {
 public:
  DivergedLoss(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class LayerNotFound : public Error {
 public:
  using Error::Error;
};

class BadBinCount : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// Base for file-format errors; carries the byte offset of the defect.
class IoError : public Error {
 public:
  IoError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  explicit IoError(const std::string& what) : Error(what), offset_(0) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class BadMagic : public IoError {
 public:
  using IoError::IoError;
};

class BadVersion : public IoError {
 public:
  using IoError::IoError;
};

class BadHeader : public IoError {
 public:
  using IoError::IoError;
};

class TruncatedPayload : public IoError {
 public:
  using IoError::IoError;
};

class TrailingData : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace sge

#endif  // SGE_ERRORS_HPP_
