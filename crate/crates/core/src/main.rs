fn main() {
    std::process::exit(soundstyle::cli::main_entry());
}
