#pragma once

#include <stdexcept>
#include <string>

namespace gcnn {

// Error categories map onto CLI exit codes: configuration 2, data/format 3,
// numeric 4. Index and shape errors are programming errors surfaced as
// configuration problems at the CLI boundary.
enum class ErrorKind {
  Config,
  Index,
  Shape,
  Numeric,
  Format,
  Data,
  Geometry,
  Statistics,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GCNN_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

GCNN_DEFINE_ERROR(ConfigError, Config)
GCNN_DEFINE_ERROR(IndexError, Index)
GCNN_DEFINE_ERROR(ShapeError, Shape)
GCNN_DEFINE_ERROR(NumericError, Numeric)
GCNN_DEFINE_ERROR(FormatError, Format)
GCNN_DEFINE_ERROR(DataError, Data)
GCNN_DEFINE_ERROR(GeometryError, Geometry)
GCNN_DEFINE_ERROR(StatsError, Statistics)

#undef GCNN_DEFINE_ERROR

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Index:
    case ErrorKind::Shape:
      return 2;
    case ErrorKind::Format:
    case ErrorKind::Data:
    case ErrorKind::Geometry:
      return 3;
    case ErrorKind::Numeric:
    case ErrorKind::Statistics:
      return 4;
  }
  return 1;
}

}  // namespace gcnn
