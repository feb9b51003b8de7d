#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jersey {

enum class Errc {
  FileNotFound,
  DecodeError,
  IoError,
  OutOfBounds,
  HeightMismatch,
  InvalidArgument,
  FontLoadError,
  ConfigError,
  EmptyBackgrounds,
  MissingClass,
  LowConfidence,
  DegenerateBox,
  ParseError,
  MissingImage,
  OutOfRange,
  EmptyClass,
  InsufficientClass,
  ShapeMismatch,
  GraphReuse,
  NonFinite,
  DataError,
  DivergedError,
  HeadMismatch,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::DecodeError: return "DecodeError";
    case Errc::IoError: return "IoError";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::HeightMismatch: return "HeightMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::FontLoadError: return "FontLoadError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::EmptyBackgrounds: return "EmptyBackgrounds";
    case Errc::MissingClass: return "MissingClass";
    case Errc::LowConfidence: return "LowConfidence";
    case Errc::DegenerateBox: return "DegenerateBox";
    case Errc::ParseError: return "ParseError";
    case Errc::MissingImage: return "MissingImage";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::InsufficientClass: return "InsufficientClass";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::GraphReuse: return "GraphReuse";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DataError: return "DataError";
    case Errc::DivergedError: return "DivergedError";
    case Errc::HeadMismatch: return "HeadMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace jersey
