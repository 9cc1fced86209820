#pragma once

#include <stdexcept>
#include <string>

namespace coqm {

// Thrown when a quasiprobability entry is non-positive where a strictly
// positive table is required (log-likelihood, contextual Fisher information).
class PositivityError : public std::domain_error {
public:
    explicit PositivityError(const std::string& what) : std::domain_error(what) {}
};

} // namespace coqm
