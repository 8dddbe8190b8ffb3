#ifndef MAFN_ERRORS_HPP
#define MAFN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mafn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text; the message carries file and line context.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose content breaks a data invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN / divergence during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Runs `f`, prefixing the message of any library error with `stage` while
/// keeping its type.
template <typename F>
decltype(auto) in_stage(const char* stage, F&& f) {
  auto wrap = [stage](const std::exception& e) { return std::string(stage) + ": " + e.what(); };
  try {
    return f();
  } catch (const DimensionError& e) {
    throw DimensionError(wrap(e));
  } catch (const ContractError& e) {
    throw ContractError(wrap(e));
  } catch (const ParseError& e) {
    throw ParseError(wrap(e));
  } catch (const DataError& e) {
    throw DataError(wrap(e));
  } catch (const NumericError& e) {
    throw NumericError(wrap(e));
  }
}

}  // namespace mafn

#endif  // MAFN_ERRORS_HPP
