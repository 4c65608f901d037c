#include "ipi/prompts.hpp"

#include "ipi/error.hpp"

namespace ipi::detail {
const std::map<std::string, std::string>& prompt_assets();
}

namespace ipi::prompts {

namespace {

struct Parsed {
    int version = 0;
    std::string body;
};

const std::map<std::string, Parsed, std::less<>>& parsed() {
    static const auto table = [] {
        std::map<std::string, Parsed, std::less<>> out;
        for (const auto& [name, raw] : detail::prompt_assets()) {
            Parsed p;
            constexpr std::string_view tag = "#version ";
            std::string_view text = raw;
            if (text.substr(0, tag.size()) == tag) {
                const auto eol = text.find('\n');
                p.version = std::stoi(std::string(text.substr(tag.size(), eol - tag.size())));
                text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
            }
            while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.remove_suffix(1);
            p.body = std::string(text);
            out.emplace(name, std::move(p));
        }
        return out;
    }();
    return table;
}

const Parsed& find(std::string_view name) {
    const auto& table = parsed();
    auto it = table.find(name);
    if (it == table.end()) throw ConfigError("missing prompt asset '" + std::string(name) + "'");
    return it->second;
}

}  // namespace

const std::string& get(std::string_view name) { return find(name).body; }

int version(std::string_view name) { return find(name).version; }

std::string render(std::string_view name, const std::map<std::string, std::string>& vars) {
    std::string out = get(name);
    for (const auto& [key, value] : vars) {
        const auto needle = "{{" + key + "}}";
        for (auto pos = out.find(needle); pos != std::string::npos;
             pos = out.find(needle, pos + value.size())) {
            out.replace(pos, needle.size(), value);
        }
    }
    return out;
}

}  // namespace ipi::prompts
