fn main() {
    std::process::exit(aimd::run(std::env::args_os()));
}
