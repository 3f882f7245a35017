# Core infrastructure package

