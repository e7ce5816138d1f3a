#pragma once

#include <stdexcept>
#include <string>

namespace cfaug {

// Base for everything thrown by this library that is not a plain
// std::invalid_argument precondition failure.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data: datasets, template files, lexicon files.
struct ParseError : Error {
    using Error::Error;
};

// Bad or inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Checkpoint file problems, split so callers can tell them apart.
struct CheckpointError : Error {
    using Error::Error;
};
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointTruncatedError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointChecksumError : CheckpointError {
    using CheckpointError::CheckpointError;
};

// Infill backend failures. Transport errors are retryable upstream;
// malformed responses are not.
struct TransportError : Error {
    using Error::Error;
};
struct MalformedBackendError : Error {
    using Error::Error;
};

}  // namespace cfaug
