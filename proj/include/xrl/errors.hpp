#pragma once

#include <stdexcept>
#include <string>

namespace xrl {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Container did not start with the expected magic or lacks required structure.
class FormatError : public Error {
public:
    using Error::Error;
};

// Header and payload disagree (truncated file, overlapping arrays, bad sizes).
class CorruptionError : public Error {
public:
    using Error::Error;
};

// Unsupported container version or dtype tag.
class VersionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A named array, field, or option that the input does not provide.
class ConfigError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// Initial/terminal staging cannot be satisfied by the data.
class StagingError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace xrl
