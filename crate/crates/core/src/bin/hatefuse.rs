fn main() {
    std::process::exit(hatefuse::pipeline::run(std::env::args_os()));
}
