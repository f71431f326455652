#include "kf/image.hpp"

#include "kf/error.hpp"
#include "kf/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kf {

namespace {

// TSV reader: '#'-prefixed comment lines and blank lines are skipped,
// fields are whitespace-separated, no quoting.
std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& p,
                                               size_t expected_fields) {
    std::vector<std::vector<std::string>> rows;
    std::string contents = read_text_file(p);
    std::istringstream in(contents);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_ws(line);
        if (fields.size() != expected_fields)
            raise(Errc::MalformedBundle, p.filename().string() + ":" + std::to_string(lineno) +
                                             ": expected " + std::to_string(expected_fields) +
                                             " fields, got " + std::to_string(fields.size()));
        rows.push_back(std::move(fields));
    }
    return rows;
}

uint64_t tsv_hex(const std::filesystem::path& p, const std::string& field) {
    auto v = parse_hex(field);
    if (!v) raise(Errc::MalformedBundle, p.filename().string() + ": bad hex value '" + field + "'");
    return *v;
}

uint64_t tsv_dec(const std::filesystem::path& p, const std::string& field) {
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(field, &pos, 10);
        if (pos != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        raise(Errc::MalformedBundle, p.filename().string() + ": bad decimal value '" + field + "'");
    }
}

} // namespace

KernelImage KernelImage::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    auto need = [&](const char* name) {
        fs::path p = dir / name;
        if (!fs::exists(p)) raise(Errc::MalformedBundle, "missing file " + p.string());
        return p;
    };

    KernelImage img;

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(need("manifest.json")));
    } catch (const nlohmann::json::parse_error& e) {
        raise(Errc::MalformedBundle, "manifest.json: " + std::string(e.what()));
    }
    if (!manifest.contains("base_vaddr") || !manifest["base_vaddr"].is_string())
        raise(Errc::MalformedBundle, "manifest.json: base_vaddr must be a hex string");
    auto base = parse_hex(manifest["base_vaddr"].get<std::string>());
    if (!base) raise(Errc::MalformedBundle, "manifest.json: bad base_vaddr");
    img.base_vaddr_ = *base;
    if (!manifest.contains("page_size") || !manifest["page_size"].is_number_unsigned())
        raise(Errc::MalformedBundle, "manifest.json: page_size must be an unsigned integer");
    img.page_size_ = manifest["page_size"].get<uint64_t>();
    std::string text_file = manifest.value("text_file", std::string("text.bin"));

    img.text_ = read_binary_file(need(text_file.c_str()));

    for (auto& row : read_tsv(need("symbols.tsv"), 3))
        img.symbols_.push_back(Symbol{row[0], tsv_hex(dir / "symbols.tsv", row[1]),
                                      tsv_dec(dir / "symbols.tsv", row[2])});

    for (auto& row : read_tsv(need("blocks.tsv"), 3))
        img.blocks_.push_back(BasicBlock{tsv_hex(dir / "blocks.tsv", row[0]),
                                         tsv_dec(dir / "blocks.tsv", row[1]), row[2]});

    for (auto& row : read_tsv(need("syscalls.tsv"), 2)) {
        if (!img.syscall_entries_.emplace(row[0], row[1]).second)
            raise(Errc::MalformedBundle, "syscalls.tsv: duplicate syscall '" + row[0] + "'");
    }

    for (auto& row : read_tsv(need("callgraph.tsv"), 2))
        img.call_graph_.emplace_back(row[0], row[1]);

    for (auto& row : read_tsv(need("irq_tophalf.txt"), 1))
        img.top_half_handlers_.insert(row[0]);

    img.index();
    img.validate();
    return img;
}

KernelImage KernelImage::from_parts(uint64_t base_vaddr, std::vector<uint8_t> text,
                                    std::vector<Symbol> symbols, std::vector<BasicBlock> blocks,
                                    std::map<std::string, std::string> syscall_entries,
                                    std::vector<CallEdge> call_graph,
                                    std::set<std::string> top_half_handlers, uint64_t page_size) {
    KernelImage img;
    img.base_vaddr_ = base_vaddr;
    img.text_ = std::move(text);
    img.symbols_ = std::move(symbols);
    img.blocks_ = std::move(blocks);
    img.syscall_entries_ = std::move(syscall_entries);
    img.call_graph_ = std::move(call_graph);
    img.top_half_handlers_ = std::move(top_half_handlers);
    img.page_size_ = page_size;
    img.index();
    img.validate();
    return img;
}

void KernelImage::save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["base_vaddr"] = format_hex(base_vaddr_);
    manifest["page_size"] = page_size_;
    manifest["text_file"] = "text.bin";
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    write_binary_file(dir / "text.bin", text_);

    std::ostringstream sym;
    sym << "# name\tstart\tsize\n";
    for (const auto& s : symbols_) sym << s.name << '\t' << format_hex(s.start) << '\t' << s.size << '\n';
    write_text_file(dir / "symbols.tsv", sym.str());

    std::ostringstream blk;
    blk << "# start\tsize\tparent\n";
    for (const auto& b : blocks_) blk << format_hex(b.start) << '\t' << b.size << '\t' << b.parent << '\n';
    write_text_file(dir / "blocks.tsv", blk.str());

    std::ostringstream sc;
    sc << "# syscall\tentry_symbol\n";
    for (const auto& [name, entry] : syscall_entries_) sc << name << '\t' << entry << '\n';
    write_text_file(dir / "syscalls.tsv", sc.str());

    std::ostringstream cg;
    cg << "# caller\tcallee\n";
    for (const auto& [from, to] : call_graph_) cg << from << '\t' << to << '\n';
    write_text_file(dir / "callgraph.tsv", cg.str());

    std::ostringstream th;
    th << "# top-half handler symbols\n";
    for (const auto& name : top_half_handlers_) th << name << '\n';
    write_text_file(dir / "irq_tophalf.txt", th.str());
}

void KernelImage::index() {
    std::sort(symbols_.begin(), symbols_.end(),
              [](const Symbol& a, const Symbol& b) { return a.start < b.start; });
    std::sort(blocks_.begin(), blocks_.end(),
              [](const BasicBlock& a, const BasicBlock& b) { return a.start < b.start; });
    symbol_index_.clear();
    for (size_t i = 0; i < symbols_.size(); i++) symbol_index_.emplace(symbols_[i].name, i);
}

void KernelImage::validate() const {
    auto fail = [](const std::string& rule) { raise(Errc::InvariantViolation, rule); };

    if (page_size_ < 256 || (page_size_ & (page_size_ - 1)) != 0)
        fail("page_size must be a power of two >= 256, got " + std::to_string(page_size_));
    if (base_vaddr_ > UINT64_MAX - text_.size())
        fail("text range overflows the address space");

    const Symbol* prev = nullptr;
    for (const auto& s : symbols_) {
        if (s.name.empty()) fail("symbol names must be non-empty");
        if (s.size == 0) fail("symbol '" + s.name + "' must have size > 0");
        check_no_overflow(s.extent());
        if (s.start < base_vaddr_ || s.end() > text_end())
            fail("symbol '" + s.name + "' lies outside the text range");
        if (prev && s.start < prev->end())
            fail("symbols must be non-overlapping: '" + prev->name + "' overlaps '" + s.name + "'");
        prev = &s;
    }
    if (symbol_index_.size() != symbols_.size()) fail("symbol names must be unique");

    // Per-symbol block bookkeeping for the overlap rule.
    std::map<std::string_view, uint64_t> last_block_end;
    for (const auto& b : blocks_) {
        if (b.size == 0) fail("blocks must have size > 0");
        check_no_overflow(b.extent());
        const Symbol* parent = find_symbol(b.parent);
        if (!parent)
            fail("block at " + format_hex(b.start) + " names unknown parent '" + b.parent + "'");
        if (b.start < parent->start || b.end() > parent->end())
            fail("block at " + format_hex(b.start) + " is not fully inside its parent '" +
                 b.parent + "'");
        auto [it, fresh] = last_block_end.emplace(parent->name, b.end());
        if (!fresh) {
            if (b.start < it->second)
                fail("blocks within symbol '" + b.parent + "' must be non-overlapping");
            it->second = b.end();
        }
    }

    for (const auto& [sc, entry] : syscall_entries_)
        if (!find_symbol(entry))
            fail("syscall '" + sc + "' names unknown entry symbol '" + entry + "'");
    for (const auto& [from, to] : call_graph_) {
        if (!find_symbol(from)) fail("call graph caller '" + from + "' is not a symbol");
        if (!find_symbol(to)) fail("call graph callee '" + to + "' is not a symbol");
    }
    for (const auto& h : top_half_handlers_)
        if (!find_symbol(h)) fail("top-half handler '" + h + "' is not a symbol");
}

const Symbol* KernelImage::symbol_at(uint64_t addr) const {
    auto it = std::upper_bound(symbols_.begin(), symbols_.end(), addr,
                               [](uint64_t v, const Symbol& s) { return v < s.start; });
    if (it == symbols_.begin()) return nullptr;
    --it;
    return it->contains(addr) ? &*it : nullptr;
}

const BasicBlock* KernelImage::block_at(uint64_t addr) const {
    auto it = std::upper_bound(blocks_.begin(), blocks_.end(), addr,
                               [](uint64_t v, const BasicBlock& b) { return v < b.start; });
    if (it == blocks_.begin()) return nullptr;
    --it;
    return it->contains(addr) ? &*it : nullptr;
}

const Symbol* KernelImage::find_symbol(std::string_view name) const {
    auto it = symbol_index_.find(name);
    return it == symbol_index_.end() ? nullptr : &symbols_[it->second];
}

uint64_t KernelImage::page_index(uint64_t addr) const {
    if (!in_text(addr))
        raise(Errc::OutOfRange, "address " + format_hex(addr) + " is outside the text range");
    return (addr - base_vaddr_) / page_size_;
}

ByteRange KernelImage::page_extent(uint64_t page) const {
    uint64_t start = base_vaddr_ + page * page_size_;
    uint64_t end = std::min(start + page_size_, text_end());
    if (page >= page_count()) raise(Errc::OutOfRange, "page " + std::to_string(page) + " beyond text");
    return {start, end - start};
}

} // namespace kf
