#include "telcos/kernels.hpp"

#include <cstdlib>

namespace telcos::kernels {

const KernelTable* avx2_table();
const KernelTable* neon_table();

namespace {

struct Selection {
    const KernelTable* table;
    std::string_view name;
};

Selection select() {
    const char* force = std::getenv("TELCOS_FORCE_SCALAR");
    if (force && force[0] == '1') return {&scalar(), "scalar"};
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        if (const KernelTable* t = avx2_table()) return {t, "avx2"};
    }
#endif
    if (const KernelTable* t = neon_table()) return {t, "neon"};
    return {&scalar(), "scalar"};
}

const Selection& selection() {
    static const Selection s = select();
    return s;
}

}  // namespace

const KernelTable& active() { return *selection().table; }

std::string_view backend_name() { return selection().name; }

}  // namespace telcos::kernels
