#pragma once

#include <stdexcept>
#include <string>

namespace deconv {

/// Failure kinds raised by the library. Each maps onto one of the CLI exit
/// code families through category().
enum class Errc {
  // numerical
  not_positive_definite,
  dimension_mismatch,
  invalid_degrees_of_freedom,
  non_positive_concentration,
  empty_interval,
  out_of_support,
  too_few_coefficients,
  label_out_of_range,
  all_responsibilities_underflow,
  degenerate_weight,
  scale_underflow,
  zero_importance_density,
  // data
  empty_dataset,
  insufficient_replicates,
  parse_error,
  io_error,
  incompatible_inputs,
  // configuration
  unknown_structure,
  invalid_config,
};

enum class ErrorCategory { config, data, numerical };

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::not_positive_definite: return "NotPositiveDefinite";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::invalid_degrees_of_freedom: return "InvalidDegreesOfFreedom";
    case Errc::non_positive_concentration: return "NonPositiveConcentration";
    case Errc::empty_interval: return "EmptyInterval";
    case Errc::out_of_support: return "OutOfSupport";
    case Errc::too_few_coefficients: return "TooFewCoefficients";
    case Errc::label_out_of_range: return "LabelOutOfRange";
    case Errc::all_responsibilities_underflow: return "AllResponsibilitiesUnderflow";
    case Errc::degenerate_weight: return "DegenerateWeight";
    case Errc::scale_underflow: return "ScaleUnderflow";
    case Errc::zero_importance_density: return "ZeroImportanceDensity";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::insufficient_replicates: return "InsufficientReplicates";
    case Errc::parse_error: return "ParseError";
    case Errc::io_error: return "IoError";
    case Errc::incompatible_inputs: return "IncompatibleInputs";
    case Errc::unknown_structure: return "UnknownStructure";
    case Errc::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

inline ErrorCategory category(Errc code) {
  switch (code) {
    case Errc::unknown_structure:
    case Errc::invalid_config:
      return ErrorCategory::config;
    case Errc::empty_dataset:
    case Errc::insufficient_replicates:
    case Errc::parse_error:
    case Errc::io_error:
    case Errc::incompatible_inputs:
      return ErrorCategory::data;
    default:
      return ErrorCategory::numerical;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace deconv
