# Application package

