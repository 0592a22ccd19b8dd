#include "builtin.hpp"

namespace flowsim {

const TemplateRegistry& builtin_registry() {
    static const TemplateRegistry reg = [] {
        TemplateRegistry r;
        blocks::register_sources(r);
        blocks::register_algebra(r);
        blocks::register_dynamic(r);
        blocks::register_indmc1(r);
        return r;
    }();
    return reg;
}

}  // namespace flowsim
