fn main() {
    std::process::exit(evoctl::run(std::env::args_os()));
}
