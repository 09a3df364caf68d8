fn main() {
    std::process::exit(glyphgan::cli::run(std::env::args_os()));
}
