fn main() {
    std::process::exit(emodan::evalcli::cli::run(std::env::args_os()));
}
