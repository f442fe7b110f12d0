#include "grouprec/numkit/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace grouprec::nk {
namespace {

const KernelTable* pick() noexcept {
    const char* env = std::getenv("GROUPREC_SIMD");
    const std::string_view want = env ? env : "auto";
    if (want == "scalar") return &scalar_kernels();
    if (const KernelTable* t = avx2_kernels()) return t;
    return &scalar_kernels();
}

const KernelTable*& active() noexcept {
    static const KernelTable* table = pick();
    return table;
}

}  // namespace

const KernelTable& kernels() noexcept { return *active(); }

void set_kernels(const KernelTable& table) noexcept { active() = &table; }

}  // namespace grouprec::nk
