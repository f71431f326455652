#include "kf/error.hpp"
#include "kf/syscall_analysis.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <random>

using namespace kf;

namespace {

KernelImage chain_image(std::vector<KernelImage::CallEdge> edges,
                        std::map<std::string, std::string> syscalls) {
    // three 32-byte symbols a, b, c at 0x1000/0x1040/0x1080
    return KernelImage::from_parts(0x1000, std::vector<uint8_t>(0x100, 0x90),
                                   {{"a", 0x1000, 32}, {"b", 0x1040, 32}, {"c", 0x1080, 32}},
                                   {{0x1000, 32, "a"}, {0x1040, 32, "b"}, {0x1080, 32, "c"}},
                                   std::move(syscalls), std::move(edges), {}, 256);
}

} // namespace

TEST_CASE("closure follows call chains transitively") {
    KernelImage img = chain_image({{"a", "b"}, {"b", "c"}}, {{"read", "a"}});
    ReachabilitySet rs = closure(img, {"app", {"read"}});
    CHECK(rs.roots == std::set<std::string>{"a"});
    CHECK(rs.reached == std::set<std::string>{"a", "b", "c"});
}

TEST_CASE("closure terminates on cycles") {
    KernelImage img = chain_image({{"a", "b"}, {"b", "a"}}, {{"read", "a"}});
    ReachabilitySet rs = closure(img, {"app", {"read"}});
    CHECK(rs.reached == std::set<std::string>{"a", "b"});
}

TEST_CASE("empty syscall list reaches nothing") {
    KernelImage img = chain_image({{"a", "b"}}, {{"read", "a"}});
    ReachabilitySet rs = closure(img, {"app", {}});
    CHECK(rs.roots.empty());
    CHECK(rs.reached.empty());
}

TEST_CASE("unknown syscalls are rejected by name") {
    KernelImage img = chain_image({}, {{"read", "a"}});
    CHECK_THROWS_WITH_AS((void)closure(img, {"app", {"read", "frob", "zap"}}),
                         doctest::Contains("frob"), Error);
}

TEST_CASE("expand_profile unions whole symbol extents and is idempotent") {
    KernelImage img = chain_image({{"a", "b"}}, {{"read", "a"}});
    KernelProfile sym;
    sym.app_name = "app";
    sym.granularity = Granularity::Symbol;
    sym.ranges.insert(img.find_symbol("c")->extent());

    ReachabilitySet rs = closure(img, {"app", {"read"}});
    KernelProfile wide = expand_profile(sym, rs, img);
    CHECK(wide.granularity == Granularity::Syscall);
    CHECK(wide.ranges.size() == 3); // c plus {a, b}
    CHECK(wide.covered_bytes() >= sym.covered_bytes());

    // same closure again adds nothing; coverage check needs Symbol input
    KernelProfile again = wide;
    again.granularity = Granularity::Symbol;
    CHECK(expand_profile(again, rs, img).ranges == wide.ranges);

    KernelProfile block;
    block.granularity = Granularity::Block;
    CHECK_THROWS_AS((void)expand_profile(block, rs, img), Error);
}

TEST_CASE("syscall_text_fraction boundary cases") {
    // all three symbols reachable: fraction = symbol bytes / text bytes
    KernelImage img = chain_image({{"a", "b"}, {"b", "c"}}, {{"read", "a"}});
    CHECK(syscall_text_fraction(img) == doctest::Approx(96.0 / 256.0));

    KernelImage none = chain_image({}, {});
    CHECK(syscall_text_fraction(none) == 0.0);
}

TEST_CASE("toy-kernel fraction matches the brute-force DFS oracle") {
    KernelImage img = KernelImage::load(kftest::toy_bundle_dir());
    std::set<std::string> roots;
    for (const auto& [sc, entry] : img.syscall_entries()) roots.insert(entry);
    auto reached = kftest::oracle_reach_dfs(img, roots);
    uint64_t bytes = 0;
    for (const auto& name : reached) bytes += img.find_symbol(name)->size;

    CHECK(syscall_text_fraction(img) == doctest::Approx(double(bytes) / double(img.text_size())));
    CHECK(syscall_text_fraction(img) < 1.0); // irq handlers are not syscall-reachable
}

TEST_CASE("httpd expansion on the toy kernel is plain set union") {
    KernelImage img = KernelImage::load(kftest::toy_bundle_dir());
    KernelProfile block = kftest::build_httpd_block_profile(img);
    KernelProfile symbol = coarsen(block, Granularity::Symbol, img);
    CHECK(symbol.ranges.size() == 12);

    SyscallList list = load_syscall_list(kftest::fixtures_dir() / "syscalls" / "httpd.txt", "httpd");
    ReachabilitySet rs = closure(img, list);
    CHECK(rs.roots.size() == 6);
    CHECK(rs.reached.size() == 19);

    // 12 profiled symbols + 19 reached, 10 shared
    KernelProfile wide = expand_profile(symbol, rs, img);
    CHECK(wide.ranges.size() == 21);
    CHECK(wide.covered_bytes() >= symbol.covered_bytes());
}

TEST_CASE("closure is monotone in the roots and is a fixpoint") {
    std::mt19937_64 rng(43);
    for (int iter = 0; iter < 20; iter++) {
        KernelImage img = kftest::random_image(rng);
        if (img.syscall_entries().empty()) continue;

        std::set<std::string> names;
        for (const auto& [sc, entry] : img.syscall_entries()) names.insert(sc);
        std::set<std::string> some;
        for (const auto& n : names)
            if (rng() % 2) some.insert(n);

        ReachabilitySet small = closure(img, {"x", some});
        ReachabilitySet all = closure(img, {"x", names});
        for (const auto& s : small.reached) CHECK(all.reached.count(s) == 1);

        // oracle agreement and reflexive-transitive fixpoint
        CHECK(all.reached == kftest::oracle_reach_dfs(img, all.roots));
        ReachabilitySet again;
        again.roots = all.reached;
        again.reached = kftest::oracle_reach_dfs(img, all.reached);
        CHECK(again.reached == all.reached);
    }
}
