#include <cstdlib>

#include "padain/kernels.hpp"
#include "padain/shape.hpp"

namespace padain::kernels {

namespace {

const Backend* g_active = nullptr;

const Backend& resolve(const std::string& name) {
    if (name == "scalar") return scalar_backend();
    if (name == "avx2") {
        if (!avx2_supported()) {
            throw InputError("kernel backend 'avx2' requested but CPU lacks AVX2/FMA");
        }
        return avx2_backend();
    }
    if (name == "auto" || name.empty()) {
        return avx2_supported() ? avx2_backend() : scalar_backend();
    }
    throw InputError("unknown kernel backend '" + name + "' (expected auto|scalar|avx2)");
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Backend& active() {
    if (g_active == nullptr) {
        const char* env = std::getenv("PADAIN_KERNELS");
        g_active = &resolve(env ? std::string(env) : std::string("auto"));
    }
    return *g_active;
}

void select(const std::string& name) { g_active = &resolve(name); }

std::string active_name() { return active().name; }

}  // namespace padain::kernels
