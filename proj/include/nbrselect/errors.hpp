#pragma once

#include <stdexcept>
#include <string>

namespace nbrselect {

// Structurally broken input: bad magic, truncated payload, unparseable text.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed input that violates a documented invariant (row sums, ranges,
// duplicate keys, missing companion data).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem trouble: unreadable file, failed write.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace nbrselect
