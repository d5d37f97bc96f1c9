#pragma once

#include <string>

#include "ddcm/error.hpp"

namespace ddcm_test {

// runs f, returning the Error message (empty when nothing was thrown)
template <class F>
std::string error_message(F&& f) {
    try {
        f();
    } catch (const ddcm::Error& e) {
        return e.what();
    }
    return "";
}

} // namespace ddcm_test
