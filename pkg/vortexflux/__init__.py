__version__ = '0.3.1'
__author__ = 'vortexflux developers'
