#include "intlora/kernels.hpp"

#include <cstdlib>
#include <string>

namespace intlora::kernels {

namespace {

struct Selection {
    const Ops* ops;
    Backend backend;
};

Selection select() {
    const char* env = std::getenv("INTLORA_KERNEL");
    const Ops* avx2 = avx2_ops();
    if (env != nullptr) {
        std::string s(env);
        if (s == "scalar") return {&scalar_ops(), Backend::Scalar};
        if (s == "avx2" && avx2 != nullptr) return {avx2, Backend::Avx2};
    }
    if (avx2 != nullptr) return {avx2, Backend::Avx2};
    return {&scalar_ops(), Backend::Scalar};
}

const Selection& selection() {
    static const Selection sel = select();
    return sel;
}

} // namespace

const Ops& ops() { return *selection().ops; }

Backend active_backend() { return selection().backend; }

std::string_view backend_name(Backend b) {
    switch (b) {
        case Backend::Avx2: return "avx2";
        default: return "scalar";
    }
}

} // namespace intlora::kernels
