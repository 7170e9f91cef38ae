// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace sonic {

// Base for every error raised by the library. `kind()` is a stable,
// machine-parseable class name used by the CLI's one-line error output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define SONIC_DEFINE_ERROR(Name, tag)                                  \
    class Name : public Error {                                        \
    public:                                                            \
        explicit Name(const std::string& message) : Error(tag, message) {} \
    }

SONIC_DEFINE_ERROR(ParseError, "parse_error");
SONIC_DEFINE_ERROR(ConfigError, "config_error");
SONIC_DEFINE_ERROR(BudgetError, "budget_error");
SONIC_DEFINE_ERROR(IndexError, "index_error");
SONIC_DEFINE_ERROR(NumericalError, "numerical_error");
SONIC_DEFINE_ERROR(UsageError, "usage_error");
SONIC_DEFINE_ERROR(AlignmentError, "alignment_error");
SONIC_DEFINE_ERROR(PartitionError, "partition_error");
SONIC_DEFINE_ERROR(IoError, "io_error");
SONIC_DEFINE_ERROR(VocabMismatchError, "vocab_mismatch");

#undef SONIC_DEFINE_ERROR

}  // namespace sonic
