#pragma once

#include <stdexcept>
#include <string>

namespace dbpnet {

/// Broad failure classes. The CLI maps each to a distinct exit code.
enum class ErrorClass {
  config,
  io,
  numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

#define DBPNET_DEFINE_ERROR(Name, Class)                                          \
  class Name : public Error {                                                     \
   public:                                                                        \
    explicit Name(const std::string& what) : Error(ErrorClass::Class, #Name ": " + what) {} \
  };

// kinematics
DBPNET_DEFINE_ERROR(NoSolution, numerical)
DBPNET_DEFINE_ERROR(TravelOutOfRange, config)
DBPNET_DEFINE_ERROR(KinematicLockup, numerical)
// dynamics
DBPNET_DEFINE_ERROR(DegenerateLink, numerical)
DBPNET_DEFINE_ERROR(SingularConfiguration, numerical)
// plant and dataset
DBPNET_DEFINE_ERROR(IntegrationDiverged, numerical)
DBPNET_DEFINE_ERROR(EmptySplit, config)
// neural core and estimators
DBPNET_DEFINE_ERROR(ShapeError, config)
DBPNET_DEFINE_ERROR(NonFiniteLoss, numerical)
DBPNET_DEFINE_ERROR(EmptyBatch, config)
DBPNET_DEFINE_ERROR(LengthMismatch, config)
DBPNET_DEFINE_ERROR(CovarianceNotPSD, numerical)
// plumbing
DBPNET_DEFINE_ERROR(ConfigError, config)
DBPNET_DEFINE_ERROR(IoError, io)

#undef DBPNET_DEFINE_ERROR

}  // namespace dbpnet
