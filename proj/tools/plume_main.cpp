#include <cstdio>

int main() {
    std::puts("plume: subcommands not wired up yet");
    return 0;
}
