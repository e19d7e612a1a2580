#include "evojudge/prompts.hpp"

#include "evojudge/digest.hpp"
#include "evojudge/errors.hpp"

namespace evojudge {

namespace detail {
const std::map<std::string, std::string, std::less<>>& embedded_prompts();
}

namespace {

std::string substitute(std::string_view text, const std::map<std::string, std::string>& vars, std::string_view name) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) throw ValidationError("unterminated placeholder in prompt " + std::string(name));
        out.append(text.substr(pos, open - pos));
        const std::string key(text.substr(open + 2, close - open - 2));
        const auto it = vars.find(key);
        if (it == vars.end()) throw ValidationError("prompt " + std::string(name) + " needs '" + key + "'");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

std::string trim_newlines(std::string s) {
    while (!s.empty() && s.front() == '\n') s.erase(s.begin());
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

} // namespace

PromptText render_prompt(std::string_view name, const std::map<std::string, std::string>& vars) {
    const auto& all = detail::embedded_prompts();
    const auto it = all.find(name);
    if (it == all.end()) throw NotFoundError("no prompt template '" + std::string(name) + "'");
    const std::string_view text = it->second;
    const auto sys = text.find("[system]\n");
    const auto usr = text.find("[user]\n");
    if (sys == std::string_view::npos || usr == std::string_view::npos || usr < sys) {
        throw ValidationError("prompt template " + std::string(name) + " lacks [system]/[user] blocks");
    }
    PromptText out;
    out.system = trim_newlines(substitute(text.substr(sys + 9, usr - sys - 9), vars, name));
    out.user = trim_newlines(substitute(text.substr(usr + 7), vars, name));
    return out;
}

std::vector<std::string> prompt_names() {
    std::vector<std::string> out;
    for (const auto& [name, text] : detail::embedded_prompts()) out.push_back(name);
    return out;
}

std::string prompt_set_version() {
    std::string material;
    for (const auto& [name, text] : detail::embedded_prompts()) material += name + "\n" + text + "\n";
    return sha256_hex(material);
}

} // namespace evojudge
