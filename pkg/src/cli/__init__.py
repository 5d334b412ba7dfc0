# Empty init file to treat the directory as a package
