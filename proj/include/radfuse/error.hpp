#pragma once

#include <stdexcept>
#include <string>

namespace radfuse {

// Every rejected precondition in the library surfaces as this type, so the CLI
// can report it with a single `error:` handler.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

// Prepends a stage name, used when a pipeline stage rethrows.
inline Error with_stage(const std::string& stage, const std::exception& e) {
    return Error(stage + ": " + e.what());
}

} // namespace radfuse
