#pragma once

#include <stdexcept>
#include <string>

namespace traceconf {

/// Base error for every failure surfaced by the library. The message is a
/// single line so the CLI can print it verbatim as its machine-readable error.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input did not match a file schema or violated a record invariant.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A statistic was requested on data that cannot support it
/// (single-class AUROC, empty corpus, degenerate variance).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// The remote endpoint answered, but not in the chat-completions shape.
class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace traceconf
